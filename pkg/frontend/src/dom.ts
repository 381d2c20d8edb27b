/** Tiny DOM builders; the app renders everything through these. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  props: Partial<HTMLElementTagNameMap[K]> & { className?: string } = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  Object.assign(node, props);
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): void {
  node.textContent = '';
}

export function statusLine(kind: 'info' | 'error', message: string): HTMLElement {
  return el('p', { className: `status status-${kind}` }, [message]);
}
