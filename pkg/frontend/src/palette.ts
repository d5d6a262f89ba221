/** The documented bucket -> color map.
 *
 * Diverging scheme: relevance supporting the explained class (positive)
 * shades warm, opposing relevance (negative) shades cool, and anything with
 * |relevance| below NEUTRAL_EPS renders neutral regardless of its bucket.
 * This is the only transformation the UI applies to server-sent relevance.
 */

import { Bucket } from "./protocol";

export const NEUTRAL_EPS = 0.01;
export const NEUTRAL_COLOR = "#9aa5ab";
export const BASE_VEHICLE_COLOR = "#cfd8dc";
export const QUERY_COLOR = "#263238";

const SUPPORT: Record<Bucket, string> = {
  high: "#c62828",
  medium: "#ef6c00",
  low: "#f9a825",
};

const OPPOSE: Record<Bucket, string> = {
  high: "#1565c0",
  medium: "#0288d1",
  low: "#26a69a",
};

export function tintFor(relevance: number, bucket: Bucket): string {
  if (Math.abs(relevance) < NEUTRAL_EPS) return NEUTRAL_COLOR;
  return relevance >= 0 ? SUPPORT[bucket] : OPPOSE[bucket];
}

/** movement -> arrows, position -> pin; the icons of the top-3 panel. */
export function iconFor(feature: "movement" | "position"): "arrows" | "pin" {
  return feature === "movement" ? "arrows" : "pin";
}

export const ICON_GLYPHS = { arrows: "⇄", pin: "⌖" } as const;
