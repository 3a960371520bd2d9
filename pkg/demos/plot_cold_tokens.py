"""
Finding cold tokens
===================

A patch encoder maps every 16-sample slice of a series into the same space
as its token table. Tokens that no real patch ever points toward are "cold":
they make good watermark targets because clean outputs almost never land
near them.
"""

import numpy as np

from tswatermark import (
    build_book,
    generate_synthetic_dataset,
    make_synthetic_protected_model,
    normalize,
)
from tswatermark.book import accumulated_similarity

# A synthetic encoder with a known warm/cold split, and some clean windows.
fx = make_synthetic_protected_model(seed=7, vocab_size=1024, d=64, P=16, warm_fraction=0.5, stride=8)
windows, stats = generate_synthetic_dataset(seed=7, n_windows=300, K=96, L=96)
windows = [normalize(w, stats) for w in windows]

# Sum each token's cosine similarity over every patch of the corpus.
acc = accumulated_similarity(fx.model, None, windows[:200])
print("warm tokens, mean accumulated similarity:", acc[fx.warm_ids].mean().round(1))
print("cold tokens, mean accumulated similarity:", acc[fx.cold_ids].mean().round(1))

# The book keeps the 32 coldest ids plus the clean statistics of the detector.
book = build_book(fx.model, windows[:200], windows[200:], M=32)
print("book ids:", book.cold_token_ids[:8], "...")
print("all mined ids are truly cold:", set(book.cold_token_ids) <= set(fx.cold_ids.tolist()))
print(f"clean max-similarity statistic: mu={book.mu:.4f} sigma={book.sigma:.4f}")

# The mined set is just the bottom of the sorted accumulation.
order = np.argsort(acc, kind="stable")
print("lowest accumulations:", np.round(acc[order[:5]], 2))
