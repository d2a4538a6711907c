"""Corpus of valid and invalid spec documents for parser tests."""

LOAN_HEAD = """\
feature City {bronx, brooklyn, queens};
feature Salary {low, mid, high} ordered;
feature Age {young, middle, old} ordered;
"""

VALID = [
    # 1: empty document
    "",
    # 2: whitespace and comments only
    "   % nothing here\n\n\t% still nothing\n",
    # 3: single feature
    "feature City {bronx};",
    # 4: plain loan schema
    LOAN_HEAD,
    # 5: entity
    LOAN_HEAD + "entity e0 {City = bronx, Salary = mid, Age = young};",
    # 6: two entities, assignments out of declaration order
    LOAN_HEAD
    + "entity e0 {Age = young, City = bronx, Salary = mid};\n"
    + "entity e1 {City = queens, Salary = high, Age = old};",
    # 7: changed atom constraint
    LOAN_HEAD + "constraint not changed(Age);",
    # 8: value test constraint
    LOAN_HEAD + "constraint City != brooklyn;",
    # 9: orig test
    LOAN_HEAD + "constraint orig(City) = bronx -> changed(Salary);",
    # 10: label atoms (unchecked until a classifier is known)
    LOAN_HEAD + "constraint label = accept or label != reject;",
    # 11: conjunction/disjunction precedence
    LOAN_HEAD + "constraint changed(City) and changed(Salary) or changed(Age);",
    # 12: implication chain (right associative)
    LOAN_HEAD + "constraint changed(City) -> changed(Salary) -> changed(Age);",
    # 13: parenthesized groups
    LOAN_HEAD + "constraint not (changed(City) or changed(Age));",
    # 14: immutable desugars to a constraint
    LOAN_HEAD + "immutable City;",
    # 15: only_increase on an ordered feature
    LOAN_HEAD + "only_increase Salary;",
    # 16: only_decrease on an ordered feature
    LOAN_HEAD + "only_decrease Age;",
    # 17: marginal statement
    LOAN_HEAD + "marginal City {bronx: 0.5, brooklyn: 0.25, queens: 0.25};",
    # 18: marginal with exponent notation and integer one
    LOAN_HEAD + "marginal Salary {low: 25e-2, mid: 0.5, high: 2.5e-1};\n"
    + "marginal City {bronx: 1, brooklyn: 0, queens: 0};",
    # 19: quoted values in domains and entities
    'feature Status {"on hold", "active", "closed?"};\n'
    'entity s {Status = "on hold"};',
    # 20: quoted value equal to a keyword
    'feature Word {"label", "not", plain};\nconstraint Word = "not";',
    # 21: escapes inside quoted values
    'feature Q {"a\\"b", "c\\\\d"};\nconstraint Q != "a\\"b";',
    # 22: identifiers with underscores and digits
    "feature f_1 {v_0, v_1};\nentity x_9 {f_1 = v_1};",
    # 23: everything packed on one line
    "feature A {x, y}; entity e {A = x}; constraint changed(A);",
    # 24: comments between statements and inside lists
    "feature A { % inline comment\n x, y};\n% trailing\nconstraint A = x;",
    # 25: deeply nested parentheses
    LOAN_HEAD + "constraint ((((changed(City)))));",
    # 26: not applied to a parenthesized implication
    LOAN_HEAD + "constraint not (changed(City) -> changed(Salary));",
    # 27: multiple constraints accumulate
    LOAN_HEAD + "constraint changed(City);\nconstraint changed(Salary);",
    # 28: feature used before its declaration (order-free resolution)
    "entity e {A = x};\nfeature A {x, y};",
    # 29: mixed actionability and constraints
    LOAN_HEAD + "immutable Age;\nonly_increase Salary;\nconstraint City != bronx;",
    # 30: windows-style newlines
    "feature A {x, y};\r\nentity e {A = y};\r\n",
    # 31: unicode value tokens inside quotes
    'feature Town {"København", other};',
    # 32: big document
    "\n".join(f"feature G{i} {{a, b, c}};" for i in range(12))
    + "\nentity big {"
    + ", ".join(f"G{i} = a" for i in range(12))
    + "};",
]

# (text, note) pairs; every one must raise a positioned language error
INVALID = [
    ("feature", "statement cut off at end of input"),
    ("feature City", "missing domain block"),
    ("feature City {bronx, brooklyn, queens}", "missing semicolon"),
    ("feature City {};", "empty domain"),
    ("feature City {bronx,, queens};", "double comma"),
    ("feature City {bronx queens};", "missing comma"),
    ("feature City {bronx, bronx};", "duplicate domain value"),
    ("feature 9City {bronx};", "feature name not an identifier"),
    ("feature City {bronx}; feature City {queens};", "duplicate feature"),
    ("feature not {x};", "keyword as feature name"),
    ('feature City {"bronx};', "unterminated quoted value"),
    ("entity e {City = bronx};", "entity before any feature exists"),
    (LOAN_HEAD + "entity e0 {City = bronx};", "entity misses features"),
    (
        LOAN_HEAD + "entity e0 {City = bronx, City = queens, Salary = mid, Age = young};",
        "feature assigned twice",
    ),
    (LOAN_HEAD + "entity e0 {City = paris, Salary = mid, Age = young};", "value not in domain"),
    (
        LOAN_HEAD
        + "entity e0 {City = bronx, Salary = mid, Age = young};\n"
        + "entity e0 {City = queens, Salary = high, Age = old};",
        "duplicate entity name",
    ),
    (LOAN_HEAD + "entity e0 {Zip = 10001};", "unknown feature in entity"),
    (LOAN_HEAD + "constraint changed(Zip);", "unknown feature in changed"),
    (LOAN_HEAD + "constraint Salary = huge;", "unknown value in comparison"),
    (LOAN_HEAD + "constraint orig(Town) = bronx;", "unknown feature in orig"),
    (LOAN_HEAD + "constraint changed(City) and;", "dangling and"),
    (LOAN_HEAD + "constraint changed(City) ->;", "dangling implication"),
    (LOAN_HEAD + "constraint not;", "bare not"),
    (LOAN_HEAD + "constraint (changed(City);", "unbalanced parenthesis"),
    (LOAN_HEAD + "constraint changed City;", "changed without parentheses"),
    (LOAN_HEAD + "constraint City == bronx;", "double equals is not an operator"),
    (LOAN_HEAD + "constraint;", "constraint without formula"),
    (LOAN_HEAD + "immutable Zip;", "immutable unknown feature"),
    (LOAN_HEAD + "only_increase City;", "only_increase on unordered feature"),
    (LOAN_HEAD + "only_decrease City;", "only_decrease on unordered feature"),
    (LOAN_HEAD + "only_increase Missing;", "only_increase unknown feature"),
    (LOAN_HEAD + "marginal City {bronx: 0.5};", "marginal misses domain values"),
    (
        LOAN_HEAD + "marginal City {bronx: 0.5, brooklyn: 0.3, queens: 0.3};",
        "marginal sums above one",
    ),
    (
        LOAN_HEAD + "marginal City {bronx: 0.5, bronx: 0.25, queens: 0.25};",
        "duplicate marginal value",
    ),
    (
        LOAN_HEAD + "marginal City {bronx: 0.5, brooklyn: 0.25, paris: 0.25};",
        "marginal value outside domain",
    ),
    (LOAN_HEAD + "marginal City {bronx: x};", "marginal probability not a number"),
    (LOAN_HEAD + "marginal Zip {a: 1};", "marginal for unknown feature"),
    ("widget City {bronx};", "unknown statement keyword"),
    ("feature City {bronx}; @", "stray character"),
    (LOAN_HEAD + "constraint label accept;", "label without comparison operator"),
]
