"""Label-text enrichment: prompt styles, descriptions, captions and learned prompts"""
