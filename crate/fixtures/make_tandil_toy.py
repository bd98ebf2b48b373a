"""Generates tandil_toy.json, the bundled 7x7 downtown grid used by tests and
the reference scenario. Re-running reproduces the committed file."""
import json
import math
import random

R = 6_371_000.0
ORIGIN = {"lat": -37.3217, "lon": -59.1332}
SPACING = 110.0
ROWS = ["9 de Julio", "San Martín", "Rodríguez", "Belgrano", "Mitre", "Sarmiento", "Colón"]
COLS = ["Pinto", "Maipú", "Yrigoyen", "Alem", "General Paz", "Chacabuco", "Las Heras"]
TWO_WAY_ROWS = {3}


def unproject(x, y):
    lat0 = math.radians(ORIGIN["lat"])
    lat = ORIGIN["lat"] + math.degrees(y / R)
    lon = ORIGIN["lon"] + math.degrees(x / (R * math.cos(lat0)))
    return round(lat, 8), round(lon, 8)


def main():
    rng = random.Random(7)
    coords = {}
    nodes = []
    for r in range(7):
        for c in range(7):
            nid = f"n{r * 7 + c + 1:02d}"
            x = c * SPACING + rng.uniform(-4, 4)
            y = -r * SPACING + rng.uniform(-4, 4)
            coords[nid] = (x, y)
            lat, lon = unproject(x, y)
            nodes.append({"id": nid, "lat": lat, "lon": lon})

    def nid(r, c):
        return f"n{r * 7 + c + 1:02d}"

    edges, blocks = [], []
    for r in range(7):
        for c in range(6):
            a, b = nid(r, c), nid(r, c + 1)
            if r not in TWO_WAY_ROWS and r % 2 == 1:
                a, b = b, a
            edges.append((a, b, ROWS[r], r not in TWO_WAY_ROWS, (r, c, r, c + 1)))
    for c in range(7):
        for r in range(6):
            edges.append((nid(r, c), nid(r + 1, c), COLS[c], False, (r, c, r + 1, c)))

    out_edges = []
    for i, (a, b, street, directed, (r1, c1, r2, c2)) in enumerate(edges, start=1):
        eid = f"e{i:03d}"
        out_edges.append({"id": eid, "from": a, "to": b, "street": street, "directed": directed})
        (xa, ya), (xb, yb) = coords[a], coords[b]
        length = math.hypot(xb - xa, yb - ya)
        usable = math.floor(length - 12.0)
        prohibited, garages = [], []
        if rng.random() < 0.3:
            prohibited.append([0, 15])
        if rng.random() < 0.2:
            s = rng.randint(30, usable - 25)
            prohibited.append([s, s + 20])
        for _ in range(rng.randint(0, 3)):
            s = rng.randint(5, usable - 4)
            garages.append([s, s + 3])
        metered = all(1 <= v <= 5 for v in (r1, c1, r2, c2))
        blocks.append({
            "id": f"b{i:03d}", "edge": eid, "usable_length": usable,
            "prohibited": prohibited, "garages": garages, "metered": metered,
        })
    # hospital frontage: no parking at all
    blocks[14]["prohibited"] = [[0, blocks[14]["usable_length"]]]
    blocks[14]["garages"] = []

    gazetteer = []

    def place(key, kind, x, y):
        lat, lon = unproject(x, y)
        gazetteer.append({"key": key, "kind": kind, "lat": lat, "lon": lon})

    for r, name in enumerate(ROWS):
        x, y = coords[nid(r, 3)]
        place(name, "street", x, y)
    for c, name in enumerate(COLS):
        x, y = coords[nid(3, c)]
        place(name, "street", x, y)
    for r, h in enumerate(ROWS):
        for c, v in enumerate(COLS):
            x, y = coords[nid(r, c)]
            place(f"{h} & {v}", "intersection", x, y)
    x, y = coords[nid(3, 3)]
    place("Plaza Independencia", "landmark", x + 55, y - 55)
    x, y = coords[nid(6, 0)]
    place("Terminal de Ómnibus", "landmark", x - 40, y - 30)

    doc = {"origin": ORIGIN, "nodes": nodes, "edges": out_edges, "blocks": blocks,
           "gazetteer": gazetteer}
    with open("tandil_toy.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, ensure_ascii=False, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
