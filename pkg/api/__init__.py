"""Command-line surface for the noise adapter pipeline"""
