"""
Stream casuali con nome derivati da un unico seed

Ogni consumatore (init, injection, candidate-sampling, ...) riceve un generatore
indipendente: aggiungere un nuovo stream non perturba quelli esistenti.
"""
import zlib

import numpy as np


def stream_key(name: str) -> int:
    """Chiave stabile (crc32) per il nome dello stream"""
    return zlib.crc32(name.encode("utf-8"))


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Generatore numpy per lo stream `name` del seed dato"""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(stream_key(name),))
    return np.random.default_rng(sequence)
