"""An ambiguous title: four films are called Titanic.

The examples also include two late-1990s American films. Disambiguation picks
the Titanic that shares the most context with them, and the abduced query
describes that shared context.
"""

from abductdb import build_adb, discover, emit_sql
from abductdb.datasets import load_fixture

store = load_fixture("titanic")
adb = build_adb(store)
movies = store.table("movie")

print("candidates for 'Titanic':")
for _, _, row in adb.index.lookup("Titanic"):
    print("  ", movies.row(row))

found = discover(["Titanic", "Pulp Fiction", "The Matrix"], store, adb)
print("\nresolved examples:")
for row in found.examples.rows:
    print("  ", movies.row(row))
print("\n" + emit_sql(found.query).sql_text, end="")
