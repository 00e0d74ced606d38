"""Software defect prediction: ANRA preprocessing, QVAET classifier, ADE tuning."""
__version__ = "0.1.0"
