from ._stump import DecisionStump, stump_candidates
