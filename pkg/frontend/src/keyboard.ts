// Keyboard review actions: examiners page through long frame sequences, so
// the whole verdict loop works without the mouse.

export type ReviewAction = "next" | "prev" | "relevant" | "irrelevant" | "clear";

const BINDINGS: Record<string, ReviewAction> = {
  j: "next",
  arrowright: "next",
  k: "prev",
  arrowleft: "prev",
  r: "relevant",
  i: "irrelevant",
  u: "clear",
};

export function actionForKey(key: string, inTextField: boolean): ReviewAction | null {
  if (inTextField) return null;
  return BINDINGS[key.toLowerCase()] ?? null;
}
