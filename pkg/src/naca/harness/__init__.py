"""Scenario runner, adversary campaigns, soundness oracle and benchmark."""
