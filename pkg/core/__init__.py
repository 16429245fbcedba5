"""
核心模块：会话模型、特征、预处理、学习器、组合与混合模型、解释、评估
"""
