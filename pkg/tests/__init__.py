"""
heatgfem 测试模块
"""
