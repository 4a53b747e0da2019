"""Sketching and random-feature approximations of the ReLU neural tangent kernel."""
