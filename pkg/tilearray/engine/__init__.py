__all__ = ["config", "reference", "stats", "systolic"]
