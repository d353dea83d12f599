"""テンソルトレイン補完のアプリケーション本体パッケージ。"""
