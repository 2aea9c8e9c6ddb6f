"""chainmeet: decentralized end-to-end encrypted meetings over hash chains.

Identities and meeting control traffic live on append-only hash-chained
ledgers; a meeting leader hands the group key to each verified member under
an ephemeral Diffie-Hellman wrap; media flows as per-stream AEAD packets.
A deterministic simulator drives honest runs and scripted adversaries and
checks the security goals hold on the transcript.
"""

__version__ = "0.1.0"
