"""Linear transfers on finite spaces: Kantorovich operators, duality and
ergodic (weak KAM) theory for iterated transfers."""

__version__ = "0.1.0"
