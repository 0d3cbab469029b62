/** Compact viridis-like colormap: 9 anchor colors, linear interpolation. */

const ANCHORS: Array<[number, number, number]> = [
  [68, 1, 84],
  [72, 40, 120],
  [62, 74, 137],
  [49, 104, 142],
  [38, 130, 142],
  [31, 158, 137],
  [53, 183, 121],
  [109, 205, 89],
  [253, 231, 37],
];

export function colormap(t: number): string {
  const x = Math.min(1, Math.max(0, t)) * (ANCHORS.length - 1);
  const i = Math.min(ANCHORS.length - 2, Math.floor(x));
  const f = x - i;
  const c = ANCHORS[i].map((a, j) => Math.round(a + f * (ANCHORS[i + 1][j] - a)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}
