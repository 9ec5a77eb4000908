__all__ = ["isa", "lowering", "model", "engine", "cpu", "cli", "core", "tools", "errors"]
