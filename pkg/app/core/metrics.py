# app/core/metrics.py
from prometheus_client import Counter, Histogram

LP_SOLVES = Counter(
    "infomech_lp_solves_total",
    "Linear programs solved, by final status.",
    ["status"],
)
LP_SOLVE_SECONDS = Histogram(
    "infomech_lp_solve_seconds",
    "Wall time of a single simplex solve.",
    buckets=(0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0),
)
LP_PIVOTS = Histogram(
    "infomech_lp_pivots",
    "Simplex pivots per solve (both phases).",
    buckets=(1, 10, 50, 100, 500, 1000, 5000, 20000),
)
REVENUE_REPORTS = Counter(
    "infomech_revenue_reports_total",
    "Revenue reports assembled.",
)
API_DOMAIN_ERRORS = Counter(
    "infomech_api_domain_errors_total",
    "Solver errors returned by the API, by error class.",
    ["error"],
)
