__all__ = ["layers", "gemm", "tiling", "emit"]
