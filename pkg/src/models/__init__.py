"""
Генераторы, дискриминаторы и сеть признаков
"""
