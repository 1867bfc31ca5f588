"""
Plain-loop Zhang-Suen thinning used as a test oracle.

Written pixel by pixel from the textbook description, sharing no code with
fuelmap.annotations.thin. The image is treated as surrounded by background.
"""


def zhang_suen_reference(mask):
    h = len(mask)
    w = len(mask[0]) if h else 0
    img = [[1 if mask[r][c] else 0 for c in range(w)] for r in range(h)]

    def px(r, c):
        if 0 <= r < h and 0 <= c < w:
            return img[r][c]
        return 0

    def neighbours(r, c):
        # P2, P3, ..., P9: north, then clockwise
        return [px(r - 1, c), px(r - 1, c + 1), px(r, c + 1), px(r + 1, c + 1),
                px(r + 1, c), px(r + 1, c - 1), px(r, c - 1), px(r - 1, c - 1)]

    def transitions(n):
        seq = n + n[:1]
        return sum(1 for a, b in zip(seq, seq[1:]) if a == 0 and b == 1)

    changed = True
    while changed:
        changed = False
        for step in (1, 2):
            to_delete = []
            for r in range(h):
                for c in range(w):
                    if img[r][c] != 1:
                        continue
                    n = neighbours(r, c)
                    p2, p3, p4, p5, p6, p7, p8, p9 = n
                    if not (2 <= sum(n) <= 6):
                        continue
                    if transitions(n) != 1:
                        continue
                    if step == 1:
                        if p2 * p4 * p6 != 0 or p4 * p6 * p8 != 0:
                            continue
                    else:
                        if p2 * p4 * p8 != 0 or p2 * p6 * p8 != 0:
                            continue
                    to_delete.append((r, c))
            for r, c in to_delete:
                img[r][c] = 0
            if to_delete:
                changed = True
    return img
