"""Sensitivity of the traced gains to the first-order element size."""
import argparse

import numpy as np

from owcnet.channel import ReceiverSpec, RoomConfig, default_aps, default_grid, first_order_map, trace_gains

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=float, nargs="+", default=[0.20, 0.10, 0.05])
    args = ap.parse_args()
    room, aps, rx, grid = RoomConfig(), default_aps(), ReceiverSpec(), default_grid()
    g = trace_gains(room, aps, rx, grid)
    ref = g.total
    for size in args.sizes:
        first = first_order_map(room, aps, rx, grid, element_size=size)
        H = (g.los + first) + g.second_order
        d_total = np.max(np.abs(H - ref) / ref)
        nz = g.first_order > 0
        d_first = np.max(np.abs(first[nz] - g.first_order[nz]) / g.first_order[nz])
        print(f"{size:.2f} m: max rel. change vs {room.first_order_element} m: total H {100 * d_total:.2f}%, "
              f"first-order term {100 * d_first:.2f}%")
