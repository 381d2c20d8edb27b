import { el } from '../dom';

/**
 * Five-star rating widget with optimistic UI: the clicked rating paints
 * immediately and rolls back if the POST fails.
 */
export function createStarWidget(
  onRate: (stars: number) => Promise<void>,
): HTMLElement {
  const container = el('span', { className: 'stars' });
  let committed = 0;
  let pending = false;

  const buttons: HTMLButtonElement[] = [];
  const paint = (stars: number) => {
    buttons.forEach((button, i) => {
      button.classList.toggle('filled', i < stars);
      button.textContent = i < stars ? '★' : '☆';
    });
  };

  for (let value = 1; value <= 5; value += 1) {
    const button = el('button', { className: 'star', textContent: '☆' });
    button.dataset.testid = `star-${value}`;
    button.addEventListener('click', async () => {
      if (pending) return;
      pending = true;
      const previous = committed;
      committed = value;
      paint(value); // optimistic
      try {
        await onRate(value);
      } catch {
        committed = previous; // rollback
        paint(previous);
        container.classList.add('rating-failed');
      } finally {
        pending = false;
      }
    });
    buttons.push(button);
    container.append(button);
  }
  paint(0);
  return container;
}
