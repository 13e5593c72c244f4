"""Mixed finite element wave solver and boundary-data source reconstruction."""
