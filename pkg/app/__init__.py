"""群れの感受領域ダイナミクスの数値実験ラボ"""
__version__ = "1.0.0"
