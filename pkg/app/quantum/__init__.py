# Quantum numerics package
