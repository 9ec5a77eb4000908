__all__ = ["config", "memory", "scoreboard", "simulator", "report"]
