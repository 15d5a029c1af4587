# Energy-efficient joint beamforming and antenna selection for multicell multicast downlinks