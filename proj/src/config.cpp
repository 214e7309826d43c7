// placeholder, populated later
