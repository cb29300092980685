"""
Core numerics: exact algebra, reduction, closed forms, quadrature, assembly and simulation.
"""
