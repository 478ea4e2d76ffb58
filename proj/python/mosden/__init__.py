"""MOSDEN edge middleware: virtual sensors, windowed processing, push/pull delivery."""

import json

from . import _mosden
from ._mosden import MosdenError, bench_csv_header, decide

__all__ = [
    "MosdenError",
    "Node",
    "Registry",
    "bench_csv_header",
    "canonical_vsd",
    "decide",
    "evaluate_window",
    "plan",
    "run_bench",
    "sim_readings",
]


def _dump(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def canonical_vsd(document):
    return _mosden.canonical_vsd(_dump(document))


def evaluate_window(schema, elements, window, aggregations, now):
    return json.loads(
        _mosden.evaluate_window(_dump(schema), _dump(elements), window, _dump(aggregations), now)
    )


def plan(cost_model, n_samples, raw_bytes_per_sample, aggregate_bytes):
    return json.loads(_mosden.plan(_dump(cost_model), n_samples, raw_bytes_per_sample, aggregate_bytes))


def sim_readings(config, count):
    return json.loads(_mosden.sim_readings(_dump(config), count))


def run_bench(scenario):
    """Runs a scenario and returns the CSV report text."""
    return _mosden.run_bench(_dump(scenario))


class Node:
    """A middleware node. Pass start_ms to run it on a manual clock."""

    def __init__(self, config, start_ms=None):
        self._node = _mosden.Node(_dump(config), start_ms)

    def activate(self, vsd):
        self._node.activate(_dump(vsd))

    def deactivate(self, name):
        self._node.deactivate(name)

    def serve(self):
        return self._node.serve()

    def start(self):
        self._node.start()

    def advance_to(self, t):
        self._node.advance_to(t)

    def now_ms(self):
        return self._node.now_ms()

    def sensors(self):
        return json.loads(self._node.sensors())

    def pull(self, vs_name, mode="latest", window=None, since_seq=None):
        return json.loads(self._node.pull(vs_name, mode, window, since_seq))

    def subscribe(self, subscription):
        return json.loads(self._node.subscribe(_dump(subscription)))

    def metrics(self):
        return json.loads(self._node.metrics())

    def close(self):
        self._node.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Registry:
    def __init__(self, data_dir=None):
        self._registry = _mosden.Registry(data_dir)

    def serve(self, host="127.0.0.1", port=0):
        return self._registry.serve(host, port)

    def records(self):
        return json.loads(self._registry.records())

    def dispatch(self, request):
        return json.loads(self._registry.dispatch(_dump(request)))

    def results(self, request_id):
        return json.loads(self._registry.results(request_id))

    def close(self):
        self._registry.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
