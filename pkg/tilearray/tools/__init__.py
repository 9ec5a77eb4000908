__all__ = ['file']
