__all__ = ["main", "experiments", "charts"]
