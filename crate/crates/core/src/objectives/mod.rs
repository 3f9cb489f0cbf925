// objectives land next
