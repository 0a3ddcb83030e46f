"""
Оценка методов, вывод окнами и сравнительная сетка
"""
