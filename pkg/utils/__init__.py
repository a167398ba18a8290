"""atomscan: atoms in tweezers next to nanophotonic waveguides."""
