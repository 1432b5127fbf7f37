"""
Sottocomandi della CLI (uno per modulo)
"""
from commands import evaluate, inject, score, spectral, sweep, synthesize, train

COMMANDS = [synthesize, inject, train, score, evaluate, spectral, sweep]
