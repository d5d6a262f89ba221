"""Live prediction runtime: adaptor, session broker, stateless workers."""

from .identity import IdentityCache, assign_uuid
from .adaptor import EnrichedFrame, EnrichedVehicle, LiveAdaptor
from .protocol import canonical_json
from .worker import WorkerCore, build_worker_app
from .broker import Broker, SubscriberChannel
