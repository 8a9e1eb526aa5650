# Example settings file for `contilog --config config.example.py ...`
# Only upper-case names are read; each overrides the matching default.

# Numerical tolerance for certified comparisons
TOL = 1e-9

# Default formula cap C
CAP = 1

# Optimizer (continuous sorts)
SEED = 0
MULTISTART = 32  # starting points per quantifier
MAX_DESCENT_STEPS = 200

# Finite enumeration limits
MAX_POINTS = 1000000  # assignments per evaluation
AUT_CAP = 5000  # carrier size squared for automorphism search
ENUM_LIMIT = 5000  # formulas per enumerated family

# Ultraproduct tails
ULTRA_WINDOW = 3
EXACT_LIMIT = 3

# JSON highlighting on terminals
THEME = "monokai"
