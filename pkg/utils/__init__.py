"""
工具类模块：配置、错误处理、会话存储
"""
