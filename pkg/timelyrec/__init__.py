"""Time-aware recommendation with periodic and evolving user preferences"""
