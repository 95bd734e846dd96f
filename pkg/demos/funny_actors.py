"""Two comedians in, an aggregate query out.

The toy movie database links people to genres through two fact tables. The
alpha-DB precomputes how many movies of each genre a person appeared in, so
the abduced query needs one join instead of a GROUP BY over three.
"""

from abductdb import build_adb, discover, emit_sql, eval_query
from abductdb.datasets import load_fixture

store = load_fixture("imdb-toy")
adb = build_adb(store)

found = discover(["Jim Carrey", "Eddie Murphy"], store, adb)
print("chosen filters:")
for f in found.query.filters:
    print("  ", f.describe())
print("\nalpha-DB form:\n" + emit_sql(found.query, "adb").sql_text, end="")
print("\noriginal-schema form:\n" + emit_sql(found.query, "original", store.schema).sql_text, end="")
print("\nresult:", sorted(r[0] for r in eval_query(store, found.query, adb)))

print("\nevery genre family seen for the examples:")
for e in found.result.ledger:
    print(f"  {e.filter.describe():<36} lambda={e.lam} prior={e.prior:.3g} -> {'keep' if e.decision else 'drop'}")
