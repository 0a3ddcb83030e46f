"""
Сборка набора пар фрагментов LR/HR
"""
