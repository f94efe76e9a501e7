"""HPD-manifold feature learning for PolSAR coherency fields."""
