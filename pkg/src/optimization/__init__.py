# Convex approximations and SCA drivers module
