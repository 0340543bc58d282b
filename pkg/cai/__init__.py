"""
Carbon commitment extraction.

Reads corporate disclosure documents, finds passages about emission reduction
targets, extracts them with a k-shot prompted LLM, scores every record for
trustworthiness and consolidates duplicates per company.
"""

__version__ = '1.0.0'
