"""Batch conversion of membrane-lab CSV reports into figures.

Strictly downstream of the CSV interfaces: field dumps ``x1[,x2],v``,
gamma dumps ``x1[,x2],label``, energy series ``r,value,kind`` and width
tables ``r,width,width_clog,width_over_r``.  No numerics happen here.
"""

__version__ = "0.1.0"
