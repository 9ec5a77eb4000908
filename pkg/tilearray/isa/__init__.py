__all__ = ["bf16", "tiles", "registers", "instructions", "trace"]
