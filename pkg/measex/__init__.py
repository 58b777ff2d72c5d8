"""
Measurement extraction toolkit for Python
=========================================

measex extracts measurements from scientific text as frames of a Quantity
and its Unit, MeasuredEntity and MeasuredProperty. It converts and
validates annotated corpora, encodes them for sequence taggers, runs a
two-step extraction pipeline, and scores and analyses the results using
numpy, numba, scipy and pandas.
"""
import measex.model
import measex.corpus
import measex.tagging
import measex.pipeline
import measex.scoring
import measex.analysis
import measex.lint
