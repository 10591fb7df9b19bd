# Radiation damping laboratory
