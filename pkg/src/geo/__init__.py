"""
Геопривязка, перепроецирование и обрезка по общему охвату
"""
