"""Scalar reference implementation of the inventory dynamics.

Every (store, product) and warehouse product holds a plain list of
``[quantity, age]`` lots and every update is written out with Python floats
and loops.  It shares no code with the vectorized simulator, so agreement
between the two is evidence that the bucket arithmetic is right.
"""
from __future__ import annotations


def _total(lots):
    return sum(q for q, _ in lots)


def _drain_oldest(lots, amount):
    """Remove up to ``amount`` starting from the oldest lot; returns what was removed."""
    removed = 0.0
    for lot in sorted(lots, key=lambda l: -l[1]):
        take = min(lot[0], amount - removed)
        lot[0] -= take
        removed += take
    lots[:] = [l for l in lots if l[0] > 0.0]
    return removed


def _add_fresh(lots, qty):
    room = max(0.0, 1.0 - _total(lots))
    accepted = min(qty, room)
    if accepted > 0.0:
        lots.append([accepted, 0])
    return qty - accepted


def _age(lots, steps, shelf_life):
    waste = 0.0
    kept = []
    for q, a in lots:
        if a + steps >= shelf_life:
            waste += q
        else:
            kept.append([q, a + steps])
    lots[:] = kept
    return waste


class ScalarOracle:
    def __init__(self, volume, truck, scale, shelf_life, cycle, store_level, warehouse_level, coupled=True):
        self.S, self.P = len(volume), len(volume[0])
        self.volume, self.truck, self.scale = volume, truck, scale
        self.life, self.n, self.coupled = shelf_life, cycle, coupled
        self.store = [[[[store_level[j][i], 0]] if store_level[j][i] > 0 else [] for i in range(self.P)]
                      for j in range(self.S)]
        self.wh = [[[warehouse_level[i], 0]] if warehouse_level[i] > 0 else [] for i in range(self.P)]
        self.pending = [0.0] * self.P
        self.t = 0

    def inventory(self):
        return [[_total(self.store[j][i]) for i in range(self.P)] for j in range(self.S)]

    def warehouse_inventory(self):
        return [_total(l) for l in self.wh]

    def step(self, u, w, b=None):
        S, P = self.S, self.P
        out = {}
        if self.coupled and self.t % self.n == 0:
            self.pending = [max(0.0, 1.0 - _total(self.wh[i])) if b[i] else 0.0 for i in range(P)]
            out["order_qty"] = list(self.pending)

        # truck clipping
        rho, req = [], []
        for j in range(S):
            vol = sum(self.volume[j][i] * u[j][i] for i in range(P))
            r = max(vol / self.truck[j], 1.0)
            rho.append(r)
            req.append([u[j][i] / r for i in range(P)])

        # warehouse fulfilment with proportional rationing
        supplied = [row[:] for row in req]
        refused = [0.0] * P
        if self.coupled:
            for i in range(P):
                need = sum(self.scale[j] * req[j][i] for j in range(S))
                chi = _total(self.wh[i])
                if need > chi:
                    f = max(chi, 0.0) / need
                    for j in range(S):
                        supplied[j][i] = req[j][i] * f
                    _drain_oldest(self.wh[i], max(chi, 0.0))
                else:
                    _drain_oldest(self.wh[i], need)
                refused[i] = max(0.0, sum(self.scale[j] * (req[j][i] - supplied[j][i]) for j in range(S)))

        overflow = [[_add_fresh(self.store[j][i], supplied[j][i]) for i in range(P)] for j in range(S)]
        sold = [[_drain_oldest(self.store[j][i], w[j][i]) for i in range(P)] for j in range(S)]
        waste = [[_age(self.store[j][i], 1, self.life[i]) for i in range(P)] for j in range(S)]
        self.t += 1

        if self.coupled and self.t % self.n == 0:
            out["warehouse_waste"] = [_age(self.wh[i], self.n, self.life[i]) for i in range(P)]
            for i in range(P):
                _add_fresh(self.wh[i], self.pending[i])
            self.pending = [0.0] * P

        out.update(rho=rho, requested=req, supplied=supplied, refused=refused, overflow=overflow, sold=sold,
                   waste=waste, inventory=self.inventory(), warehouse=self.warehouse_inventory())
        return out
