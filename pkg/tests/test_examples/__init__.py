"""
One suite per contilog module, in dependency order
"""
