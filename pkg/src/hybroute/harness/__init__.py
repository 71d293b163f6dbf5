"""Instance generation, oracles, verification, rendering and the CLI."""
