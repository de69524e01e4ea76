"""Access control for the north-bound interface of an SDN controller.

Applications declare resource needs in a deployment manifest, operators
narrow them with attribute rules, and a request tagger / reference monitor
pair enforces the resulting access masks on every query an (untrusted)
controller sends to the network information base.
"""

__version__ = "0.1.0"

import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())
