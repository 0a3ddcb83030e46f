"""
Модульные тесты srforge
"""
