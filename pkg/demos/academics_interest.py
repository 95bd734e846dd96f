"""Two researchers as examples: does the shared research interest matter?

Runs the academics fixture twice. Under the default prior weight the shared
interest is treated as coincidence. When filters are given even odds it is
kept, and the abduced query returns a third researcher with that interest.
"""

from abductdb import AbductionParams, build_adb, discover, emit_sql, eval_query
from abductdb.datasets import load_fixture

store = load_fixture("academics")
adb = build_adb(store)
examples = ["Dan Suciu", "Sam Madden"]

for label, params in [("default prior", AbductionParams()), ("even odds, no coverage penalty", AbductionParams(rho=0.5, gamma=0))]:
    found = discover(examples, store, adb, params)
    print(f"== {label} ==")
    for e in found.result.ledger:
        verdict = "keep" if e.decision else "drop"
        print(f"  {e.filter.describe()}: psi={e.psi:.3f} include={e.include:.3f} exclude={e.exclude:.3f} -> {verdict}")
    print(emit_sql(found.query).sql_text, end="")
    print("  returns:", sorted(r[0] for r in eval_query(store, found.query, adb)))
    print()
