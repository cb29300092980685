"""
Melnikov toolkit: reduction, evaluation and zero counting of Melnikov functions
for piecewise polynomial perturbations of a quadratic global center.
"""
