// Rendering helpers. Formatting only: the values themselves are always
// fields from an API response, never computed here.

export function formatScore(value: number): string {
  return value.toFixed(3);
}

// Rates drop trailing zeros so the 23-of-100 case reads "0.23", while
// mean scores keep the fixed 3-decimal form.
export function formatRate(value: number): string {
  const fixed = value.toFixed(3);
  if (!fixed.includes(".")) return fixed;
  return fixed.replace(/0+$/, "").replace(/\.$/, "");
}

export function formatCount(value: number): string {
  return String(value);
}
