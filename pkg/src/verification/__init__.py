# Exhaustive oracle and property check module
