"""Privacy-preserving location-centric profiles: protocols, simulator and benches."""
