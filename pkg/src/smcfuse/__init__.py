"""State-space image fusion with gated cross-modal experts, sized for a CPU."""
