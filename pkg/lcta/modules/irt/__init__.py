from ._jml import CalibrationResult, JointMaximumLikelihoodCalibration
