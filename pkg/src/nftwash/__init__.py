"""NFT wash trading forensics over exported chain data."""

import decimal

# products of 18-decimal amounts and prices outgrow the default 28 digits
decimal.getcontext().prec = 80
decimal.DefaultContext.prec = 80

__version__ = "0.1.0"
