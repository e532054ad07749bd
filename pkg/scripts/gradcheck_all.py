"""Run every finite-difference suite and print the per-case error tables."""

import sys
import time

from smcfuse.gradsuite import SCOPES, format_results, run_suite

failed = 0
for scope in SCOPES:
    t0 = time.perf_counter()
    results = run_suite(scope)
    print(f"== {scope} ({time.perf_counter() - t0:.1f}s)")
    print(format_results(results))
    failed += sum(not r.passed for _, r in results)
sys.exit(1 if failed else 0)
