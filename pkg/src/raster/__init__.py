"""
Растры: тип Raster, нормализация, фильтры, передискретизация и формат SRRAS
"""
