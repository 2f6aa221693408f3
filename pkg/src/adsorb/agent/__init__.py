"""Planner, Critic and Binding Indexer over a chat backend."""
