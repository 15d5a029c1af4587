# Conic program representation and solver adapter module
