"""
Тесты srforge
"""
