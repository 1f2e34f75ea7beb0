name = "niftrace"
