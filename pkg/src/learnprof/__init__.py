"""learnprof: quiz instrumentation and psychometric analysis for
interactive textbooks.

The pipeline: author quizzes as TOML, embed them in a markdown book
(``book``), serve the published site statically while a small service
collects answer telemetry (``telemetry``), then turn exports into graded
response sets (``dataset``) and analyze them with classical test theory
(``ctt``), a 3PL item response model (``irt``), temporal A/B statistics
(``interventions``), and small-N error simulations (``smalln``).
"""

__version__ = "0.1.0"
